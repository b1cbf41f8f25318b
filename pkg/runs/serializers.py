import math

from rest_framework import serializers


class FiniteFloatField(serializers.FloatField):
    """Floats that JSON can carry; NaN and infinities become null."""

    def to_representation(self, value):
        value = float(value)
        return value if math.isfinite(value) else None


class FlagValueField(serializers.Field):
    def to_representation(self, value):
        if value is None or isinstance(value, bool):
            return value
        value = float(value)
        return value if math.isfinite(value) else None


def _floats(**kwargs):
    return serializers.ListField(child=FiniteFloatField(), **kwargs)


class MetaSerializer(serializers.Serializer):
    tool = serializers.CharField()
    version = serializers.CharField()
    command = serializers.CharField()
    config_sha256 = serializers.CharField(source="digest")


class SpectralReportSerializer(serializers.Serializer):
    p = _floats()
    sigma = FiniteFloatField()
    alpha = FiniteFloatField()
    energy = FiniteFloatField()
    grad_E = _floats()
    d2E = FiniteFloatField()
    m_ren = FiniteFloatField()
    d2E_variational = FiniteFloatField()
    N_f = FiniteFloatField()
    residual = FiniteFloatField()
    splitting = FiniteFloatField()
    step = FiniteFloatField()
    richardson_steps = serializers.IntegerField()
    solver = serializers.CharField()
    iterations = serializers.IntegerField()
    outside_momentum_ball = serializers.BooleanField()
    flags = serializers.DictField(child=FlagValueField())


class MassWindowSerializer(serializers.Serializer):
    c0 = FiniteFloatField()
    holds = serializers.BooleanField()
    excesses = _floats()


class PhotonNumberFitSerializer(serializers.Serializer):
    p = _floats()
    alpha = FiniteFloatField()
    grad_E = _floats()
    prediction = FiniteFloatField()
    intercept = FiniteFloatField(allow_null=True)
    slope = FiniteFloatField(allow_null=True)
    slope_stderr = FiniteFloatField(allow_null=True)
    rvalue = FiniteFloatField(allow_null=True)
    relative_spread = FiniteFloatField()
    converged_sigmas = serializers.SerializerMethodField()
    excluded_sigmas = serializers.SerializerMethodField()

    def get_converged_sigmas(self, scan):
        return [point.sigma for point in scan.points if point.converged]

    def get_excluded_sigmas(self, scan):
        return [point.sigma for point in scan.points if not point.converged]


class EquivalenceVerdictSerializer(serializers.Serializer):
    p = _floats()
    alpha = FiniteFloatField()
    grad_E = _floats()
    sigmas = _floats()
    norms_sq = _floats()
    slope = FiniteFloatField()
    intercept = FiniteFloatField()
    threshold = FiniteFloatField()
    prediction = FiniteFloatField()
    verdict = serializers.SerializerMethodField()

    def get_verdict(self, result):
        return result.verdict.value


class OverlapDecaySerializer(serializers.Serializer):
    sigma = FiniteFloatField()
    sigma_primes = _floats()
    overlaps = _floats()
    exponent = FiniteFloatField()
    intercept = FiniteFloatField()
    prediction = FiniteFloatField()


class LocalDiagnosticsSerializer(serializers.Serializer):
    rho = FiniteFloatField()
    local_number = FiniteFloatField()
    c_rho = FiniteFloatField()
