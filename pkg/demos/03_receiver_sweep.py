# %% [markdown]
# # Full receiver: detection, decoding and cancellation
#
# The receiver alternates between the bilinear detector, the outer
# decoder and successive interference cancellation. Each round removes
# the users whose codewords check, then looks again at what is left.

# %%
import numpy as np

from bisparc import channel as ch
from bisparc import harness as hs
from bisparc import receiver as rx
from bisparc.config import RngStream, ds1_config, eb_n0_db, with_eb_n0_db

cfg = with_eb_n0_db(ds1_config(), 27.6)
A, code = hs.build_scenario(cfg)

# %% [markdown]
# ## One trial, round by round

# %%
rng = RngStream(cfg.seed, 5)
messages = hs.draw_messages(cfg.K_active, cfg.B, rng.child(0))
supports = [rx.reencode(m, code, cfg) for m in messages]
obs = ch.synthesize(A, supports, ch.draw_channels(cfg.K_active, cfg.M, rng.child(1)),
                    cfg.sigma2, cfg.P, rng.child(2))
res = rx.run_receiver(obs.Y, A, cfg, code, rng=rng.child(3))
print("received energy %.1f" % np.linalg.norm(obs.Y) ** 2)
for tr in res.trace:
    print("round %d: decoded %d, residual energy %.1f" % (tr.round, tr.decoded, tr.residual_energy))
print("PUPE:", ch.pupe(messages, res.decoded), " false alarms:", ch.false_alarms(messages, res.decoded))

# %% [markdown]
# ## A short Eb/N0 sweep
# Twenty trials per point keeps this quick; the acceptance run uses two
# hundred. Error falls steeply between 20 and 26 dB.

# %%
for ebn0 in (20.4, 22.8, 25.2):
    point = hs.run_point(with_eb_n0_db(ds1_config(), ebn0), trials=20, workers=1)
    print("Eb/N0 %5.1f dB  PUPE %.3f +- %.3f  rounds %.1f"
          % (eb_n0_db(point.config), point.pupe_mean, point.pupe_ci95, point.rounds_mean))
