"""
Test package for biwave.
"""
