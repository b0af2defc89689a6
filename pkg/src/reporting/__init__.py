"""CSV tables and SVG charts for experiment results."""
