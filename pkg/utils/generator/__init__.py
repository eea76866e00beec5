from .synthetic_generator import SyntheticDatasetGenerator, GeneratorConfig, GenerationReport, write_histogram

__all__ = ['SyntheticDatasetGenerator', 'GeneratorConfig', 'GenerationReport', 'write_histogram']
