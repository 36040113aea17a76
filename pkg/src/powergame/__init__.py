"""Game-theoretic downlink power setting for dense two-tier networks with CA."""

from .scenario import (
    AreaType,
    Carrier,
    GeometryError,
    InvalidConfig,
    Location,
    PAPER_DEFAULT_CONFIG,
    PoAKind,
    PowerLevelSet,
    Scenario,
    ScenarioConfig,
    Team,
    Tile,
    TimeOfDay,
    TrafficProfile,
    build_scenario,
    export_scenario,
    import_scenario,
    load_config,
    populate_ues,
    validate_scenario,
)
from .propagation import (
    AttenuationTensor,
    PropagationModel,
    average_attenuation,
    build_attenuation_tensor,
    export_attenuation,
    import_attenuation,
    path_gain,
)
from .game import (
    GameOutcome,
    GameParams,
    PriceTable,
    StrategyProfile,
    best_reply,
    compute_price_table,
    interference,
    run_multi_carrier_game,
    run_single_carrier_game,
    sinr,
    team_cost,
    team_payoff,
    team_utility,
    thermal_noise_w,
    update_prices,
)
from .analysis import (
    ContinuousGameParams,
    NEReport,
    best_reply_derivative,
    check_strategic_substitutes,
    closed_form_best_reply,
    enumerate_pure_ne,
    ne_certificate,
    payoff_along_best_reply,
    price_bound,
)
from .simulate import (
    DownloadRequest,
    EnergyModel,
    MetricsReport,
    RateTable,
    energy_consumed,
    generate_traffic,
    jain_index,
    pf_schedule,
    run_simulation,
    sinr_to_rate,
)

__version__ = "0.1.0"
