"""Traffic-metadata attack on smart homes: device identification, state
detection and classification, activity inference, and a spoofing defense."""

__version__ = "0.1.0"
