"""Event-camera line tracking with spiking Hough vision and spiking PD control."""

__version__ = "0.1.0"
