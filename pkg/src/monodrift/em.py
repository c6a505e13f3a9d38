# Copyright 2024 The monodrift authors

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import pkgutil

import em


def empy_expand(template, substitution_variables):
    """Indirection for empy version compatibility."""
    if em.__version__.startswith('3'):
        return em.expand(template, substitution_variables)
    else:
        return em.expand(template, globals=substitution_variables)


def render_template(name, substitution_variables):
    """Expand a template shipped in ``monodrift/templates``."""
    template = pkgutil.get_data('monodrift', 'templates/%s' % name).decode('utf-8')
    return empy_expand(template, substitution_variables)
