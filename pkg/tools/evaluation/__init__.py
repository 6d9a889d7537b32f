"""
Inference, error reporting, track ingestion and plots
"""
