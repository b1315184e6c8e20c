"""
Services package for ISMForge.

This package contains the computational modules: image-source geometry,
materials, directivity, the ISM engine, scenario generation, DOA estimation
and metrics.
"""
