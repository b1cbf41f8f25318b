from ._base import LabCommand


class Command(LabCommand):
    help = "Photon number of the ground state across a decreasing sigma list, with its ln(1/sigma) fit."
    pipeline = "photon_number"
