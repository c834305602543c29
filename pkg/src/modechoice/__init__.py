"""Mode-choice modeling toolkit."""
