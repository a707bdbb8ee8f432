"""
Test suite for nv-deer.
"""
