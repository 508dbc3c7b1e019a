import { ApiClient } from './api.js';
import { startApp } from './app.js';

startApp(document.getElementById('app')!, new ApiClient(''));
