"""Deep Ritz solver for second-order elliptic problems with projected gradient training."""
