from ._base import LabCommand


class Command(LabCommand):
    help = "Ground-state energy, gradient and renormalized mass per momentum and coupling."
    pipeline = "spectrum"
