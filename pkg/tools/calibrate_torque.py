"""Size the nominal motor torque so every digit presses at least 10 N.

Static fingertip force is homogeneous in torque, so the required torque
is 10 N divided by the per-N.mm force of the weakest digit at
mid-flexion.  The frozen default adds ~20% margin and rounds up.
"""

from handtwin import actuation, model

desc = model.default_hand()
mid = desc.mid_state()

worst = None
for digit in model.DIGITS:
    chain = desc.digits[digit].flex_chain()
    names = [j.name for j in desc.digits[digit].joints if j.kind == "leadscrew"]
    angles = [mid.get(f"{digit.lower()}.{n}") for n in names]
    per_unit = actuation.static_fingertip_force(
        chain, angles, [1.0] * len(angles))
    print(f"{digit}: {per_unit.force_n:.6f} N per N.mm  "
          f"(limiting joint index {per_unit.limiting_joint})")
    if worst is None or per_unit.force_n < worst[1]:
        worst = (digit, per_unit.force_n)

need = 10.0 / worst[1]
print(f"weakest: {worst[0]}  -> torque for 10 N: {need:.4f} N.mm")
print(f"suggested nominal with ~20% margin: {need * 1.2:.4f} N.mm")
