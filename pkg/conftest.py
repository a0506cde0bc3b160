# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Let pytest collect testscenarios-based test cases.

The testtools runner expands ``scenarios`` itself; pytest does not, so
each scenario is turned into its own TestCase subclass at collection.
"""

import inspect
import unittest

from _pytest.unittest import UnitTestCase


def pytest_pycollect_makeitem(collector, name, obj):
    if not (
        inspect.isclass(obj)
        and issubclass(obj, unittest.TestCase)
        and getattr(obj, "scenarios", None)
    ):
        return None
    items = []
    for scenario_name, attributes in obj.scenarios:
        scenario_class = type(
            obj.__name__,
            (obj,),
            dict(attributes, scenarios=None, __module__=obj.__module__),
        )
        scenario_class.__qualname__ = obj.__qualname__
        item = UnitTestCase.from_parent(
            collector, name="%s(%s)" % (name, scenario_name)
        )
        item._obj = scenario_class
        items.append(item)
    return items
