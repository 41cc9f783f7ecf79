"""Infrastructure layer: config loading, file stores and run manifests."""
