"""Extended calculator features built on the base module."""

from base import Calculator, precision, format_result


class Scientific(Calculator):
    """Calculator with division support."""

    def divide(self, a, b):
        return round(a / b, precision)


def quick_add(a, b):
    calc = Calculator()
    return calc.add(a, b)


def demo():
    return format_result(quick_add(2, 3))
