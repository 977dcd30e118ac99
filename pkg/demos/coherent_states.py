"""Coherent states drift apart by exactly their displacement, once the truncation is big enough."""

from ncgeom import moyal

theta = 1.0
for r in (0.25, 0.5):
    print(f"r = {r}")
    for row in moyal.coherent_rows(theta, r, (12, 16, 32)):
        print(f"  N={row['N']:>3}  [{row['lower']:.9f}, {row['upper']:.9f}]"
              f"  a_N bound {row['aN_lower']:.4f} (sharp {row['aN_sharp_lower']:.4f})")

# a heavy tail is refused rather than silently truncated
try:
    moyal.coherent_vector(moyal.truncation(8, theta), 4.0)
except moyal.TruncationError as exc:
    print("refused:", exc)

M = moyal.truncation(64, theta)
el = moyal.aN_element(M, 4)
print(f"||[D, b_4]|| at N=64: {el.comm_norm:.6f}  (sqrt(2/theta) = {(2 / theta) ** 0.5:.6f})")
