import { bootstrap } from './app.js';

const mount = document.getElementById('app');
if (!mount) throw new Error('missing #app mount point');
const baseUrl =
    (document.documentElement.dataset['apiBase'] as string | undefined) ?? '';
bootstrap(mount, baseUrl);
