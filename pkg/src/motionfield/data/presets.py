"""Named experiment presets.

Each preset records the data generator, model and training settings of one
experiment family as plain data, so the CLI and the api can list them and
build runs from them.
"""

ELEMENTAL = {
    "title": "Elemental motions",
    "description": "3000 points in [-1, 1]^3 under translation, rotation, scaling or shearing",
    "data": {
        "generator": "elemental",
        "n_points": 3000,
        "n_frames": 20,
        "dim": 3,
        "train_fraction": 0.25,
    },
    "model": {"hidden_dim": 128, "n_hidden": 2},
    "train": {"lr": 1e-4, "iters": 2000, "smoothness_weight": 0.1},
    "runs": [
        {"variant": "trans", "reg": "none"},
        {"variant": "trans", "reg": "h-homog"},
        {"variant": "se3", "reg": "h"},
        {"variant": "scaled-se3", "reg": "h"},
        {"variant": "affinity", "reg": "none"},
        {"variant": "affinity", "reg": "h"},
    ],
    "notes": [
        "Test EPE is reported on the 75% of points held out from training",
        "Rotation turns about z, shearing fills the xy entry",
    ],
}


IMAGE2D = {
    "title": "Image grid deformation",
    "description": "The pixel grid of a 512 x 512 image mapped to [-1, 1]^2 and deformed in 2D",
    "data": {
        "generator": "image2d",
        "n_side": 512,
        "n_frames": 30,
        "dim": 2,
        "train_fraction": 0.25,
    },
    "model": {"hidden_dim": 128, "n_hidden": 2},
    "train": {"lr": 1e-4, "iters": 2000, "smoothness_weight": 0.1},
    "runs": [
        {"variant": "trans", "reg": "none"},
        {"variant": "se3", "reg": "h"},
        {"variant": "affinity", "reg": "h"},
    ],
    "notes": ["2D rotations are a normalized (cos, sin) pair"],
}


ALIGNMENT = {
    "title": "Guided mesh alignment",
    "description": "A capped cylinder bending 60 degrees about a hinge over 30 frames",
    "data": {
        "generator": "alignment",
        "n_frames": 30,
        "n_scan_points": 4000,
        "n_guidance": 200,
    },
    "model": {"hidden_dim": 128, "n_hidden": 3},
    "train": {
        "lr": 1e-4,
        "iters": 2000,
        "weights": {"alpha1": 1e3, "alpha2": 1.0, "alpha3": 1.0, "alpha4": 1e-3},
    },
    "runs": [
        {"variant": "affinity", "reg": "none"},
        {"variant": "affinity", "reg": "ah"},
        {"variant": "dpf", "reg": "ah"},
        {"variant": "bonecloud", "reg": "a"},
    ],
    "notes": [
        "Template vertices are never used as guidance during training",
        "Normals of warped meshes are recomputed per frame",
    ],
}


FLUID = {
    "title": "Recorded particle clips",
    "description": "Long particle recordings cut into 10-frame clips after 2x downsampling",
    "data": {
        "generator": "clips",
        "step": 2,
        "clip_len": 10,
        "starts": [10, 326, 5],
        "train_fraction": 0.5,
    },
    "model": {"hidden_dim": 128, "n_hidden": 2},
    "train": {"lr": 1e-4, "iters": 5000, "smoothness_weight": 0.1},
    "runs": [
        {"variant": "trans", "reg": "none"},
        {"variant": "affinity", "reg": "h"},
    ],
    "notes": ["Clip starts are counted in downsampled frames: range(10, 326, 5)"],
}


HIDDEN256 = {
    "title": "Wide fields",
    "description": "Elemental motions with 256 hidden units for the capacity comparison",
    "data": {
        "generator": "elemental",
        "n_points": 3000,
        "n_frames": 20,
        "dim": 3,
        "train_fraction": 0.25,
    },
    "model": {"hidden_dim": 256, "n_hidden": 2},
    "train": {"lr": 1e-4, "iters": 2000, "smoothness_weight": 0.1},
    "runs": [
        {"variant": "trans", "reg": "none"},
        {"variant": "affinity", "reg": "h"},
    ],
    "notes": ["Parameter counts grow with d^2 in the hidden layers"],
}
