"""
Formats package for ISMForge.

This package contains readers and writers for every on-disk format.
"""
