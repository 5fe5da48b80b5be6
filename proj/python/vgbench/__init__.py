"""Visual geo-localization retrieval engine bindings."""

try:
    from . import _core  # installed wheel layout
except ImportError:  # build-tree layout: _core.so next to the package dir
    import _core

NO_HIT = _core.NO_HIT
Index = _core.Index
PcaModel = _core.PcaModel
build_index = _core.build_index
load_index = _core.load_index
gem = _core.gem
mac = _core.mac
spoc = _core.spoc
rmac = _core.rmac
netvlad = _core.netvlad
pca_fit = _core.pca_fit
haversine_m = _core.haversine_m
synth = _core.synth
recall_at_n = _core.recall_at_n
mine = _core.mine

__version__ = _core.__version__
__all__ = [
    "NO_HIT",
    "Index",
    "PcaModel",
    "build_index",
    "load_index",
    "gem",
    "mac",
    "spoc",
    "rmac",
    "netvlad",
    "pca_fit",
    "haversine_m",
    "synth",
    "recall_at_n",
    "mine",
]
