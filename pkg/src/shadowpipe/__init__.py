"""shadowpipe: a resumable camera-trap image labeling pipeline.

Raw image series go in; YOLO-style training labels come out. In between:
metadata analysis, time-correlated batching, optional lens correction,
background-subtraction segmentation, an external detector behind a
process-boundary adapter, perceptual-hash deduplication, crowd voting,
backmapping, and weighted probability fusion. An evaluation harness scores
exported labels against ground truth.
"""

__version__ = "0.1.0"
