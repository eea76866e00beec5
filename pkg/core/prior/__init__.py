"""潜变量先验"""
from .gmm_prior import GaussianMixturePrior, conditional_kl, prior_log_likelihood, downsample_labels

__all__ = ['GaussianMixturePrior', 'conditional_kl', 'prior_log_likelihood', 'downsample_labels']
