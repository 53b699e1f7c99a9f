"""Learning networks by least squares on tensorized monomial features."""

__version__ = "0.1.0"
