"""Small hand-built datasets with known region geometry."""
