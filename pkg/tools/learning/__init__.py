"""
Pose regressor, its training loop and checkpoint files
"""
