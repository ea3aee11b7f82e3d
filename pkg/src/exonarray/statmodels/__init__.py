"""Linear-model machinery for splicing and expression tests."""

from .design import DesignSpec, Observation, build_design, sum_contrast
from .distributions import betainc, f_cdf, f_sf, t_cdf, t_sf, t_two_sided
from .linear import LinearFit, solve_least_squares
from .models import (GeneTestResult, anosva_probe, anosva_probeset, de_anova,
                     expected_anosva_df)
from .multitest import bh_adjust

__all__ = [
    "DesignSpec", "Observation", "build_design", "sum_contrast",
    "betainc", "f_cdf", "f_sf", "t_cdf", "t_sf", "t_two_sided",
    "LinearFit", "solve_least_squares",
    "GeneTestResult", "anosva_probe", "anosva_probeset", "de_anova", "expected_anosva_df",
    "bh_adjust",
]
