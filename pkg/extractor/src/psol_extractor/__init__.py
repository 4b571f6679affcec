"""Feature exporter: runs a pretrained convolutional backbone over image
datasets and writes the psol pipeline's on-disk formats."""

__version__ = "0.1.0"
