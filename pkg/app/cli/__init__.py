"""
CLI package for ISMForge.

This package contains the subcommand router and one module per subcommand.
"""
