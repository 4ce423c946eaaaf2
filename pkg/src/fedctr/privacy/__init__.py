from .attack import N_NEGATIVES, AttackInstance, instance_auc, run_attack, sample_candidates
from .laplace import PrivacyConfig, clip_l2, laplace_noise, laplace_perturb, privatize
