"""A desk-scale toolkit for training and evaluating multi-label object attribute networks."""
