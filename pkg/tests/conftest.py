from hypothesis import settings

# Property tests here do real numeric work per example; wall-clock
# deadlines only add flakiness on loaded machines.
settings.register_profile("phenotrail", deadline=None)
settings.load_profile("phenotrail")
