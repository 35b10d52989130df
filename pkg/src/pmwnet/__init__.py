"""Portuguese man-of-war image classification pipeline."""
