"""
Synthetic labeled trajectories and their dataset files
"""
