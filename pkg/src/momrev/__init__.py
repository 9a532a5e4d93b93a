"""momrev: momentum residual blocks with exact inversion, reversible
backpropagation, toy classification/segmentation networks, and the
evaluation metrics to audit them."""

__version__ = "0.1.0"
