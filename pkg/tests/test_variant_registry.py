"""Tests for the training variant registry."""

from unittest.mock import Mock

import pytest

from src.application.trainer import train, train_no_rl_baseline
from src.application.variant_registry import VariantRegistry, create_variant_registry
from src.domain.errors import ConfigurationError
from src.domain.kinds import AblationKind


class TestVariantRegistry:
    """Tests for VariantRegistry class."""

    def test_register_and_get(self):
        """Test a registered routine is returned for its kind."""
        registry = VariantRegistry()
        routine = Mock()
        registry.register(AblationKind.NO_RL, routine)
        assert registry.get(AblationKind.NO_RL) is routine
        assert registry.kinds() == [AblationKind.NO_RL]

    def test_get_unregistered_raises(self):
        """Test a missing variant is a configuration error."""
        with pytest.raises(ConfigurationError, match="trainer.ablation: variant 'none' not registered"):
            VariantRegistry().get(AblationKind.NONE)

    def test_register_replaces(self):
        """Test registering twice keeps the latest routine."""
        registry = VariantRegistry()
        first, second = Mock(), Mock()
        registry.register(AblationKind.NONE, first)
        registry.register(AblationKind.NONE, second)
        assert registry.get(AblationKind.NONE) is second


class TestCreateVariantRegistry:
    """Tests for create_variant_registry function."""

    def test_every_variant_is_registered(self):
        """Test all ablation kinds have a routine."""
        assert set(create_variant_registry().kinds()) == set(AblationKind)

    def test_routines(self):
        """Test only the no-RL variant uses single-edit training."""
        registry = create_variant_registry()
        assert registry.get(AblationKind.NO_RL) is train_no_rl_baseline
        for kind in (AblationKind.NONE, AblationKind.NO_BACKTRACKING, AblationKind.NO_REGULARIZATION):
            assert registry.get(kind) is train
