"""Two-layer binarized-ReLU model under Gaussian input: closed forms, Monte Carlo oracles, dynamics."""
