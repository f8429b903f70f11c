"""mechlab: cyclic-group interventions and optimizer drift in two-layer convolutional generators."""
__version__ = "0.1.0"
