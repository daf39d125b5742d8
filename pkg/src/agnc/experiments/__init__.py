"""Monte-Carlo benchmarks: robust linear regression and synthetic ICP."""
