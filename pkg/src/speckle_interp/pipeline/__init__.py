"""Dataset generation, training, evaluation and reporting."""
