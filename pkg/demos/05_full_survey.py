"""End-to-end survey: simulate, run the pipeline, print the report.

The default configuration mirrors the desk-scale validation scenario: a
2x3 orchard at 5 m spacing surveyed along a straight 23 m pass. Expect
roughly half a minute of compute.

    python demos/05_full_survey.py
"""

from treescan.pipeline import PipelineConfig, run_pipeline

config = PipelineConfig(mode="simulate", seed=0)
print("simulating and processing a full straight survey "
      f"({config.orchard_rows}x{config.orchard_cols} grid, "
      f"{config.goal_distance:.0f} m pass)...\n")

report = run_pipeline(config)
print(report.to_table_text())
print(f"mean per-scan latency: {1000 * report.mean_latency_s:.1f} ms "
      f"(sensor period is 100 ms)")
