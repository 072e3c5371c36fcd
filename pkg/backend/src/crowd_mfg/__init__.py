"""Limited-prediction mean-field game solver for pedestrian crowds."""
