"""Conditional density models for asset prices driven by an information process."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ArbitrageError,
    ArgumentError,
    ClippedMassWarning,
    ConfigError,
    DegenerateDensityError,
    DomainError,
    IngestionError,
    StabilityWarning,
)
from .grid import DensityGrid, MarketSnapshot, StateGrid, breeden_litzenberger, make_grid, moment, normalize  # noqa: E402
from .vol import ConstantInTime, Semilinear, Separable, Tabulated, integrate_v  # noqa: E402
from .filtering import (  # noqa: E402
    TimeMesh,
    conditional_density,
    master_equation_euler,
    simulate_batch,
    simulate_path,
)
from .bridge import bachelier_density, semilinear_density, transform_density  # noqa: E402
from .pricing import BinaryModel, binary_call_closed_form, call_price, implied_normal_vol, smile  # noqa: E402
