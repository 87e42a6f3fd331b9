"""Possibilistic inferential models.

Turn a statistical model and observed data into a calibrated possibility
contour over the parameter, then read off plausibilities of hypotheses,
confidence regions, marginal contours, credal-set samples, prediction sets
and frequentist diagnostics.
"""

from .credal import (
    CredalSampleSet,
    EllipsoidApprox,
    calibrate_ellipsoid,
    contour_from_samples,
    sample_contour,
    sample_inner_approx,
)
from .diagnostics import (
    FCRCurve,
    PosteriorProcedure,
    RootNecessity,
    bayes_regression_posterior,
    bayes_regression_procedure,
    fcr_estimate,
    im_fcr_estimate,
    regression_root_hypothesis,
)
from .engine import (
    ConfidenceRegion,
    MonteCarloConfig,
    ValidityTable,
    confidence_region,
    contour_mc,
    contour_wilks,
    im_from_confidence_family,
    im_from_test_family,
    likelihood_contour,
    test_hypothesis,
    validity_diagnostic,
)
from .errors import *  # noqa: F401,F403
from .marginal import (
    FeatureMap,
    extension_contour,
    feature_mle,
    plugin_profile_contour,
    profile_contour,
    profile_relative_likelihood,
)
from .models import (
    Dataset,
    Model,
    builtin_models,
    check_fixture,
    fixture,
    make_model,
    mle,
    read_dataset,
    relative_likelihood,
)
from .possibility import (
    CredalReport,
    GaussianPossibilityParams,
    HypothesisSet,
    PossibilityContour,
    credal_membership,
    gaussian_contour,
    necessity_of,
    possibility_of,
    prob_to_poss,
)
from .predict import (
    ConformityRanking,
    LossFunction,
    conformal_region,
    conformal_transducer,
    empirical_risk_minimize,
    fit_risk_im,
    risk_im_contour,
)

__version__ = "0.1.0"
