"""augmentlab."""
