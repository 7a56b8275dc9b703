"""Core domain models, errors, configuration and the ROI engine."""
