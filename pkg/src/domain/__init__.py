"""Domain layer: records, configuration, kinds, errors and ports."""
