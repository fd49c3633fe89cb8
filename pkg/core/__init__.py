"""붕괴 모델의 해석/시뮬레이션/스윕 모듈."""
