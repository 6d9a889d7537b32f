"""
Tools package - deterministic library code for trajectory-based camera pose estimation
"""
