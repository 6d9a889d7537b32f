"""
Core infrastructure: errors, logging, camera geometry and the neural network kernel
"""
