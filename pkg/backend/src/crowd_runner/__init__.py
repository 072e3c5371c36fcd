"""Command-line runner and run metrics for crowd_mfg."""
