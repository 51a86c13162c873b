"""Brain-tumor segmentation with a 3D attention UNet, radiomic features and survival regression."""

__version__ = "0.1.0"
