# --------------------------------------------------
# metrics.py
# --------------------------------------------------
# In-process Prometheus-style metrics with thread-safe
# counters.
#
# It tracks:
#   ✔ Saddle-point solves (by factorization method)
#   ✔ Elementary NVB bisections
#   ✔ Adaptive loop iterations (amfem / approx)
#   ✔ Solve latency buckets (<=100ms, <=500ms, +Inf)
#
# `adapt` and `verify` write render_prometheus() to
# metrics.prom in their output directory.
# --------------------------------------------------

import threading
from collections import defaultdict


class Metrics:
    """
    Thread-safe metric collector.
    Counters live in memory and reset with the process (or reset()).
    """

    def __init__(self):
        self.lock = threading.Lock()
        self.solves = defaultdict(int)
        self.bisections = 0
        self.iterations = defaultdict(int)
        self.latency_buckets = defaultdict(int)

    def reset(self):
        with self.lock:
            self.solves.clear()
            self.bisections = 0
            self.iterations.clear()
            self.latency_buckets.clear()

    # --------------------------------------------------
    # Counters
    # --------------------------------------------------

    def inc_solve(self, method: str):
        """
        Count one saddle solve labeled by factorization method:
          - splu
          - dense_sym
        """
        with self.lock:
            self.solves[method] += 1

    def inc_bisections(self, count: int):
        with self.lock:
            self.bisections += int(count)

    def inc_iteration(self, loop: str):
        with self.lock:
            self.iterations[loop] += 1

    def observe_latency(self, ms: float):
        """
        Record solve latency into discrete buckets:
          <= 100 ms
          <= 500 ms
          > 500 ms
        """
        with self.lock:
            if ms <= 100:
                self.latency_buckets["100"] += 1
            elif ms <= 500:
                self.latency_buckets["500"] += 1
            else:
                self.latency_buckets["+Inf"] += 1

    # --------------------------------------------------
    # Render Prometheus exposition format
    # --------------------------------------------------

    def render_prometheus(self) -> str:
        """
        Produces text output in Prometheus-readable format, e.g.

            amfem_solves_total{method="splu"} 12
            amfem_bisections_total 418
            amfem_iterations_total{loop="amfem"} 11
            amfem_solve_latency_ms_bucket{le="100"} 10
            amfem_solve_latency_ms_count 12
        """
        with self.lock:
            lines = []

            for method, value in sorted(self.solves.items()):
                lines.append(f'amfem_solves_total{{method="{method}"}} {value}')

            lines.append(f"amfem_bisections_total {self.bisections}")

            for loop, value in sorted(self.iterations.items()):
                lines.append(f'amfem_iterations_total{{loop="{loop}"}} {value}')

            count_100 = self.latency_buckets.get("100", 0)
            count_500 = self.latency_buckets.get("500", 0)
            count_inf = self.latency_buckets.get("+Inf", 0)
            total = count_100 + count_500 + count_inf

            lines.append(f'amfem_solve_latency_ms_bucket{{le="100"}} {count_100}')
            lines.append(f'amfem_solve_latency_ms_bucket{{le="500"}} {count_100 + count_500}')
            lines.append(f'amfem_solve_latency_ms_bucket{{le="+Inf"}} {total}')
            lines.append(f"amfem_solve_latency_ms_count {total}")

        return "\n".join(lines) + "\n"


# Global shared instance
metrics = Metrics()
