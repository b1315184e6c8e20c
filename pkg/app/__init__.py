"""
ISMForge - Shoebox image-source room acoustics and DOA evaluation toolkit
"""

__version__ = "1.0.0"
