"""Mining ROI pipeline - data side: domain models, ROI labels, CSV ingestion and CLI."""

__version__ = "0.1.0"
