"""SA-Net source root."""
