import math

from django import forms
from django.conf import settings

from lab.fockspace import SUPPORTED_ANGULAR_ORDERS
from lab.hamiltonian import SOLVER_METHODS
from lab.kernels import PLATEAU_EDGE
from lab.scattering import SAMPLING_MODES


def _split(value: str, separator: str = ",") -> list[str]:
    return [part.strip() for part in value.split(separator) if part.strip()]


class FloatListField(forms.CharField):
    default_error_messages = {"invalid": "Enter a comma-separated list of numbers."}

    def to_python(self, value):
        value = super().to_python(value)
        if not value:
            return None
        try:
            numbers = tuple(float(part) for part in _split(value))
        except ValueError:
            raise forms.ValidationError(self.error_messages["invalid"], code="invalid")
        if not numbers or not all(math.isfinite(n) for n in numbers):
            raise forms.ValidationError(self.error_messages["invalid"], code="invalid")
        return numbers


class IntListField(forms.CharField):
    default_error_messages = {"invalid": "Enter a comma-separated list of non-negative integers."}

    def to_python(self, value):
        value = super().to_python(value)
        if not value:
            return None
        try:
            numbers = tuple(int(part) for part in _split(value))
        except ValueError:
            raise forms.ValidationError(self.error_messages["invalid"], code="invalid")
        if not numbers or min(numbers) < 0:
            raise forms.ValidationError(self.error_messages["invalid"], code="invalid")
        return numbers


class VectorField(FloatListField):
    default_error_messages = {"invalid": "Enter three comma-separated numbers."}

    def to_python(self, value):
        vector = super().to_python(value)
        if vector is not None and len(vector) != 3:
            raise forms.ValidationError(self.error_messages["invalid"], code="invalid")
        return vector


class VectorListField(forms.CharField):
    default_error_messages = {"invalid": "Enter vectors as 'x, y, z' separated by semicolons."}

    def to_python(self, value):
        value = super().to_python(value)
        if not value:
            return None
        vector = VectorField()
        try:
            return tuple(vector.to_python(part) for part in _split(value, ";"))
        except forms.ValidationError:
            raise forms.ValidationError(self.error_messages["invalid"], code="invalid")


class SectionForm(forms.Form):
    """A config section: raw INI strings layered over the section defaults."""

    defaults: dict = {}

    def __init__(self, data=None, **kwargs):
        super().__init__({**self.get_defaults(), **(data or {})}, **kwargs)

    def get_defaults(self) -> dict:
        return dict(self.defaults)


class PhysicsForm(SectionForm):
    defaults = {
        "p": "0, 0, 0",
        "sigma": "0.05",
        "sigma_list": "1e-2, 1e-3, 1e-4",
        "alpha": "0.001",
        "spin": "0, 0, 1",
        "rho": "0",
        "threshold": "1e-3",
        "c_prime": "1",
        "c_two_point": "1",
    }

    p = VectorField()
    momenta = VectorListField(required=False)
    sigma = forms.FloatField()
    sigma_list = FloatListField()
    alpha = forms.FloatField(min_value=0.0)
    alpha_list = FloatListField(required=False)
    alpha_max = forms.FloatField(min_value=0.0)
    grad_E = VectorField(required=False)
    spin = VectorField()
    rho = forms.FloatField(min_value=0.0)
    threshold = forms.FloatField(min_value=0.0)
    c_prime = forms.FloatField(min_value=0.0)
    c_two_point = forms.FloatField(min_value=0.0)

    def get_defaults(self) -> dict:
        return {**super().get_defaults(), "alpha_max": repr(settings.LAB_ALPHA_MAX)}

    def clean_sigma(self):
        sigma = self.cleaned_data["sigma"]
        if not (0.0 < sigma <= PLATEAU_EDGE):
            raise forms.ValidationError(f"sigma must lie in (0, {PLATEAU_EDGE}].")
        return sigma

    def clean_sigma_list(self):
        sigmas = self.cleaned_data["sigma_list"]
        # 0 names the sigma -> 0 profile; only kernel-norm evaluates it.
        if any(not (0.0 <= s <= PLATEAU_EDGE) for s in sigmas):
            raise forms.ValidationError(f"Every sigma must lie in [0, {PLATEAU_EDGE}].")
        return sigmas

    def clean_spin(self):
        spin = self.cleaned_data["spin"]
        if not any(spin):
            raise forms.ValidationError("The spin direction must be non-zero.")
        return spin

    def clean(self):
        cleaned_data = super().clean()
        alpha_max = cleaned_data.get("alpha_max")
        if alpha_max is None:
            return cleaned_data
        for name in ("alpha", "alpha_list"):
            values = cleaned_data.get(name)
            if values is None:
                continue
            values = values if isinstance(values, tuple) else (values,)
            if any(a < 0 or a > alpha_max for a in values):
                self.add_error(name, f"Couplings must lie in [0, {alpha_max!r}].")
        return cleaned_data


class GridForm(SectionForm):
    defaults = {
        "n_radial": "2",
        "n_angular": "6",
        "n_max": "2",
        "n_cap": "2",
        "nodes_per_decade": "2",
        "floor_ratio": "0.25",
    }

    n_radial = forms.IntegerField(min_value=1)
    n_angular = forms.TypedChoiceField(choices=[(str(n), str(n)) for n in SUPPORTED_ANGULAR_ORDERS], coerce=int)
    ir_floor = forms.FloatField(required=False, min_value=0.0)
    n_max = forms.IntegerField(min_value=1)
    n_cap = forms.IntegerField(min_value=1)
    nodes_per_decade = forms.IntegerField(min_value=1)
    floor_ratio = forms.FloatField()
    modes = IntListField(required=False)

    def clean_floor_ratio(self):
        ratio = self.cleaned_data["floor_ratio"]
        if not (0.0 < ratio <= 1.0):
            raise forms.ValidationError("floor_ratio must lie in (0, 1].")
        return ratio


class SolverForm(SectionForm):
    defaults = {
        "method": "auto",
        "tolerance": "1e-8",
        "max_iter": "10000",
        "step": "1e-3",
    }

    method = forms.ChoiceField(choices=[(m, m) for m in SOLVER_METHODS])
    tolerance = forms.FloatField()
    max_iter = forms.IntegerField(min_value=1)
    step = forms.FloatField()
    dense_limit = forms.IntegerField(min_value=1)
    dimension_cap = forms.IntegerField(min_value=1)

    def get_defaults(self) -> dict:
        return {
            **super().get_defaults(),
            "dense_limit": str(settings.LAB_DENSE_LIMIT),
            "dimension_cap": str(settings.LAB_DIMENSION_CAP),
        }

    def clean_tolerance(self):
        tolerance = self.cleaned_data["tolerance"]
        if tolerance <= 0:
            raise forms.ValidationError("The tolerance must be positive.")
        return tolerance

    def clean_step(self):
        step = self.cleaned_data["step"]
        if step <= 0:
            raise forms.ValidationError("The finite-difference step must be positive.")
        return step


class ScatteringForm(SectionForm):
    defaults = {
        "epsilon": "0.05",
        "beta": "2",
        "levels": "1, 2, 3",
        "velocity": "free",
        "d2E": "1",
        "bump_center": "0, 0, 0.15",
        "bump_width": "0.1",
        "n_angular": "26",
        "sampling": "integrated",
    }

    epsilon = forms.FloatField()
    beta = forms.FloatField()
    levels = IntListField()
    velocity = forms.ChoiceField(choices=[("free", "free"), ("renormalized", "renormalized")])
    d2E = forms.FloatField()
    bump_center = VectorField()
    bump_width = forms.FloatField()
    n_angular = forms.TypedChoiceField(choices=[(str(n), str(n)) for n in SUPPORTED_ANGULAR_ORDERS], coerce=int)
    sampling = forms.ChoiceField(choices=[(mode, mode) for mode in SAMPLING_MODES])

    def clean_epsilon(self):
        epsilon = self.cleaned_data["epsilon"]
        if not (0.0 < epsilon < 1.0):
            raise forms.ValidationError("epsilon must lie in (0, 1).")
        return epsilon

    def clean_beta(self):
        beta = self.cleaned_data["beta"]
        if beta <= 1.0:
            raise forms.ValidationError("The cutoff schedule needs beta > 1.")
        return beta

    def clean_bump_width(self):
        width = self.cleaned_data["bump_width"]
        if width <= 0:
            raise forms.ValidationError("The bump width must be positive.")
        return width


class OutputForm(SectionForm):
    defaults = {"directory": "."}

    directory = forms.CharField()
    stem = forms.CharField(required=False)


SECTION_FORMS = {
    "physics": PhysicsForm,
    "grid": GridForm,
    "solver": SolverForm,
    "scattering": ScatteringForm,
    "output": OutputForm,
}
