"""Domain types, dataset ingestion, configuration and persistence."""
