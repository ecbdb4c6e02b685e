from . import kset, matching, generator, experiments
