__all__ = ["cli", "rct_data", "rebalance", "learners", "metamodels", "evaluation", "schema", "encodings", "plotting", "config", "errors", "utils"]
__version__ = "0.1.0"
