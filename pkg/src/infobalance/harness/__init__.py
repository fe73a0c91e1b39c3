"""Configuration, seeded orchestration, persistence and the CLI."""
