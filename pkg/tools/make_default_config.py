"""Regenerate the bundled default hand config from the built-in tables."""

from pathlib import Path

from handtwin import model

out = Path(__file__).resolve().parents[1] / "src/handtwin/data/default_hand.json"
out.write_text(model.serialize(model.default_hand()))
print(f"wrote {out}")
