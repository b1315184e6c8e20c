"""
CLI commands package for ISMForge.

This package contains all subcommand modules.
"""
