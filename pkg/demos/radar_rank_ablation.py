"""OMA slots with radar SIC: the unpenalized radar matrix is a free direction."""

# %%
import logging

from rsma_isac.channel import make_channels
from rsma_isac.config import RadarSicMode, SystemConfig
from rsma_isac.optimizer import solve_baseline

logging.disable(logging.WARNING)
cfg = SystemConfig(seed=0)
ch = make_channels(cfg, seed=0)

# %% literal weighting: psi = 0 drops the radar term from the rank-one penalty
for flag in (False, True):
    rep = solve_baseline(cfg.replace(penalize_radar=flag), ch, "OMA", RadarSicMode.SIC_RADAR)
    radar = [round(s.residuals.get("radar_power", 0.0), 2) for s in rep.slots]
    resid = [round(s.rank_residuals["r"], 3) for s in rep.slots]
    print(f"penalize_radar={flag}: min EE {rep.min_ee:.4f}, slot radar power {radar}, rank residual {resid}")
