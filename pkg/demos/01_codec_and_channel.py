# %% [markdown]
# # From bits to a received block
#
# A user's message is a bit string. The outer LDPC code adds parity, the
# coded bits are cut into sections, and each section picks one column of
# a shared dictionary. The transmit signal is the power-normalised sum of
# the picked columns. Every user goes through the same fading channel to
# an M-antenna receiver.

# %%
import numpy as np

from bisparc import channel as ch
from bisparc import dictionary as D
from bisparc.config import RngStream, ds1_config, eb_n0_db
from bisparc.outer import encode, regular_code, syndrome
from bisparc.receiver import int_to_bits, reencode
from bisparc.sparc import decode_sections, encode_sections, modulate

cfg = ds1_config()
print(cfg.K_active, "users,", cfg.M, "antennas, T =", cfg.T, ", L x Q =", cfg.L, "x", cfg.Q)
print("Eb/N0 of the default noise level: %.1f dB" % eb_n0_db(cfg))

# %% [markdown]
# ## Outer code
# A (32, 16) regular code: every codeword has an all-zero syndrome.

# %%
code = regular_code(cfg.outer_length, cfg.B, RngStream(cfg.seed, 1))
message = 0xBEEF
word = encode(int_to_bits(message, cfg.B), code)
print("codeword:", "".join(map(str, word)))
print("syndrome weight:", int(syndrome(word, code).sum()))

# %% [markdown]
# ## Sections
# Four bits per section select one of sixteen columns. The map is a bijection.

# %%
sections = encode_sections(word, 4)
print("section indices:", sections.sections)
assert np.array_equal(decode_sections(sections), word)
support = reencode(message, code, cfg)
print("same support through the receiver helper:", np.array_equal(support.sections, sections.sections))

# %% [markdown]
# ## Transmit signal
# The signal has exactly power P whatever columns were chosen.

# %%
A = D.build(cfg.dictionary, cfg.T, cfg.N, RngStream(cfg.seed, 0))
s = modulate(A, support, cfg.P)
print("signal energy / P = %.12f" % (np.vdot(s, s).real / cfg.P))

# %% [markdown]
# ## Channel
# Eight users, independent Rayleigh gains per antenna, white noise.

# %%
rng = RngStream(cfg.seed, 2)
messages = [int(m) for m in rng.integers(0, 2**cfg.B, cfg.K_active)]
supports = [reencode(m, code, cfg) for m in messages]
H = ch.draw_channels(cfg.K_active, cfg.M, rng.child(0))
obs = ch.synthesize(A, supports, H, cfg.sigma2, cfg.P, rng.child(1))
clean = obs.signals @ obs.H
signal = np.linalg.norm(clean) ** 2
noise = np.linalg.norm(obs.Y - clean) ** 2
print("received block", obs.Y.shape, " per-sample SNR %.1f dB" % (10 * np.log10(signal / noise)))

# %% [markdown]
# ## Scoring
# PUPE counts the transmitted messages missing from the decoded list.

# %%
print("nothing decoded:", ch.pupe(messages, []))
print("half decoded:   ", ch.pupe(messages, messages[::2]))
print("all decoded:    ", ch.pupe(messages, messages))
