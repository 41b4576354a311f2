"""CLI, experiment configuration, drivers and Monte Carlo studies."""
