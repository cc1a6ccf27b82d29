import warnings

import pytest

warnings.filterwarnings("ignore", category=DeprecationWarning)

from catchrelease import synthmedia as sm
from catchrelease.config import AppConfig, TranscriberConfig, build_runtime
from catchrelease.registry import builtin_seed_path, load_registry
from catchrelease.store import ContentStore


@pytest.fixture(scope="session")
def registry():
    return load_registry(builtin_seed_path())


@pytest.fixture()
def content(tmp_path):
    return ContentStore(tmp_path / "store")


@pytest.fixture(scope="session")
def video_cache(tmp_path_factory):
    """Authored test videos are deterministic per parameters; build each once."""
    root = tmp_path_factory.mktemp("videos")
    cache: dict[tuple, bytes] = {}

    def build(duration_s=10.0, fps=10.0, size=(512, 512), scene_bounds=None,
              animate=True) -> bytes:
        key = (duration_s, fps, size, tuple(scene_bounds or ()), animate)
        if key not in cache:
            path = root / f"v{len(cache)}.mp4"
            sm.make_video(path, duration_s, fps, size, scene_bounds, animate)
            cache[key] = path.read_bytes()
        return cache[key]

    return build


@pytest.fixture()
def media(content):
    from catchrelease.media import MediaStore

    return MediaStore(content)


def make_runtime(tmp_path, script_lines=None, **config_kw):
    """Full stack rooted in tmp_path with a scripted transcriber."""
    if script_lines is not None:
        script = tmp_path / "narration.txt"
        script.write_text("\n".join(script_lines) + "\n")
        transcriber = TranscriberConfig(kind="scripted", script=str(script))
    else:
        transcriber = TranscriberConfig(kind="static")
    cfg = AppConfig(
        store_root=str(tmp_path / "store"),
        transcriber=transcriber,
        **config_kw,
    )
    return build_runtime(cfg)


@pytest.fixture()
def runtime(tmp_path):
    return make_runtime(tmp_path)
