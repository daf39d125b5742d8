"""SE(3) utilities, point clouds, registration residuals and ICP."""
