"""Train QLBS and RLOP and compare their prices with Black-Scholes.

With the config epoch counts (a few minutes) RLOP lands within about 1%
of BS and QLBS sits above it by a risk premium that grows with lambda.
Pass a smaller epoch count to see how far an undertrained RLOP falls short.
"""

import json
import sys
from pathlib import Path

from hedgelab import experiments as ex
from hedgelab.config import from_dict
from hedgelab.rlop import bs_reference

configs = Path(__file__).resolve().parents[1] / "configs"
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else None

for name, env in (("rlop_vol.json", "rlop"), ("qlbs_vol.json", "qlbs")):
    doc = json.loads((configs / name).read_text())
    if epochs:
        doc["train"]["n_epochs"] = epochs
    for lam in ((0.0,) if env == "rlop" else (0.0, 0.01)):
        doc.setdefault("qlbs", {})["lam"] = lam
        cfg = from_dict(doc)
        model, _ = ex.train_cached(cfg, env)
        pt = ex.evaluate_price(model, cfg)
        bs = bs_reference(cfg.rlop_config())
        print(f"{env} lambda={lam:<5g} price {pt.price:.5f} (BS {bs:.5f}, {pt.price / bs - 1:+.1%}) "
              f"final reward {model.loss_curve[-1]['mean_reward']:+.5f}")
