import hypothesis

# fixed-seed, reproducible property testing at the volume the
# randomized-invariant checks call for
hypothesis.settings.register_profile(
    "winentropy",
    max_examples=1000,
    derandomize=True,
    deadline=None,
)
hypothesis.settings.load_profile("winentropy")
