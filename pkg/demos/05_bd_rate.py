"""BD-rate: average rate difference between two RD curves.

A curve that spends 0.8x the rate at every quality is exactly -20%; curves
that never share a quality interval produce an explicit "no_overlap" result
instead of a number.
"""

from taskcodec.metrics import RDCurve, RDPoint, bd_rate, bd_rate_report


def curve(rates, qualities):
    return RDCurve.from_points(
        [RDPoint(bpp=r, quality=q, lam=float(i), seed=0, mode="base")
         for i, (r, q) in enumerate(zip(rates, qualities))],
        metric_kind="psnr")


anchor = curve([1.0, 2.0, 4.0, 8.0], [30.0, 34.0, 38.0, 42.0])
cheaper = curve([0.8, 1.6, 3.2, 6.4], [30.0, 34.0, 38.0, 42.0])
shifted = curve([1.0, 2.0, 4.0, 8.0], [31.0, 35.5, 39.0, 42.5])

print(f"identical:        {bd_rate(anchor, anchor):+.3f} %")
print(f"0.8x rate:        {bd_rate(anchor, cheaper):+.3f} %")
print(f"better quality:   {bd_rate(anchor, shifted):+.3f} %")

disjoint = curve([1.0, 2.0, 4.0, 8.0], [10.0, 11.0, 12.0, 13.0])
print("disjoint curves: ", bd_rate_report(anchor, disjoint, "anchor", "low"))
