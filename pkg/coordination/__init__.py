"""Multi-agent coordination: buffered Voronoi cells, congestion metric and corridor reservations."""
