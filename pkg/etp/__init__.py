"""Evolving temporal proposals: actionness grouping, boundary refinement and staged localization."""
